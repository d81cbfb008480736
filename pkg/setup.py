from setuptools import setup, find_packages

install_requires = ["dill", "pandas", "numpy", "scipy", "pyyaml"]

setup(
    name="greenlab",
    version="0.1.0",
    python_requires=">=3.7",
    packages=find_packages(exclude=["tests"]),
    description="A numerical lab for Green functions, equilibrium measures and Lyapunov spectra of endomorphisms of P^k.",
    long_description="See README.md for the user guide.",
    install_requires=install_requires,
    extras_require={"test": ["pytest", "hypothesis"]},
    entry_points={"console_scripts": ["greenlab = greenlab.cli:main"]},
    license="BSD",
)
