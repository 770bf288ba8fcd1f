from setuptools import setup
from setuptools import find_packages

import os
here = os.path.abspath(os.path.dirname(__file__))

version = {}
with open(os.path.join(here, "nlvolret", "__version__.py")) as f:
    exec(f.read(), version)

with open("README.md") as readme_file:
    readme = readme_file.read()

setup(
    name='nlvolret',
    version=version["__version__"],
    license='GPLv3',
    description = 'Nonlocal volatility-return correlations of stock prices and an agent-based market model',
    long_description=readme,
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=["tests"]),
    include_package_data=True,
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.20',
        'pandas>=1.0',
        'scipy>=1.4.1',
        'tqdm>=4.43.0',
	],
    extras_require={"dev": ["pytest",
                            "sphinx>=4.4.0",
                            "sphinx_rtd_theme",
                            "sphinxcontrib-apidoc",
                            "myst-parser"]
    },
    entry_points={
        "console_scripts": ["nlvolret=nlvolret.cli:main"],
    },
    classifiers=[
        'Development Status :: 3 - Alpha',
        'License :: OSI Approved :: GNU General Public License v3 (GPLv3)',
        'Programming Language :: Python :: 3.8',
        'Topic :: Scientific/Engineering',
  ],
)
