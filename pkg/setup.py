from setuptools import setup, find_packages

setup(
    name="gds_thermo",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "python-dotenv>=0.19.0",
        "pydantic>=2.0.0"
    ],
    extras_require={"test": ["pytest>=7.0"]},
    entry_points={"console_scripts": ["gds_thermo=src.cli.commands:main"]},
)
