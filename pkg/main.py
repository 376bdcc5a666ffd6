import sys

from src.cli.commands import main

if __name__ == "__main__":
    # 日志目录默认为 logs/<command>_runs，可通过 --log-dir 修改
    sys.exit(main())
