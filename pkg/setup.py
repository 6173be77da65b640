from setuptools import find_packages, setup

setup(
    name="mqme-dissipation",
    version="0.1.0",
    description="Frequency-resolved dissipation analysis with the modified quantum master equation and HEOM benchmarks",
    packages=find_packages(exclude=["tests"]),
    python_requires=">=3.9",
    install_requires=[
        "numpy==1.26.0",
        "pandas==2.1.0",
        "PyYAML==6.0.1",
        "scipy==1.11.3",
    ],
    entry_points={"console_scripts": ["mqme-d=mqme_dissipation.cli:main"]},
)
