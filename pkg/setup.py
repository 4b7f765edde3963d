"""Setup script for qnet_gradient python package."""

from setuptools import setup, find_packages

required = ['numpy']

extras_require = {
        'test': ['pytest', 'pytest-cov', 'coverage']
}

setup(
    name='qnet_gradient',
    version='0.1.0',
    description='Unbiased gradient estimation for closed queueing networks with '
                'parameter-dependent routing',
    packages=find_packages('src'),
    package_dir={'': 'src'},
    install_requires=required,
    extras_require=extras_require,
    entry_points={
        'console_scripts': ['qnet-gradient = qnet_gradient.cli:main'],
    },
)
