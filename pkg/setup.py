import setuptools
import os

about = {}
with open(os.path.join('vflincentive', '__version__.py'), 'r') as fh:
    exec(fh.read(), about)

with open("README.md", "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name = "vflincentive",
    version = about['__version__'],
    description="Bankruptcy-rule incentive payouts for passive parties in vertical federated learning",
    license = "MIT",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=['tests']),
    include_package_data=True,
    package_data={'vflincentive': ['partitions.yaml']},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Development Status :: 3 - Alpha",
    ],
    install_requires=['numpy', 'pandas', 'requests', 'PyYAML', 'tabulate'],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['vflincentive=vflincentive.cli:main']},
    python_requires='>=3.8',
)
