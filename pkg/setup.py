from setuptools import setup, find_packages

setup(
    name="fdin",  # package name
    version="0.1.0",
    packages=find_packages(exclude=['tests', 'tests.*']),
    license='Apache-2.0',
    python_requires='>=3.8',
    long_description=open('README.md').read(),
    long_description_content_type="text/markdown",
    install_requires=['click==8.1.7',
                      'joblib==1.3.2',
                      'lightning',
                      'matplotlib==3.7.4',
                      'numpy==1.24.3',
                      "omegaconf>=2.3.0",
                      'pandas==2.0.3',
                      'Pillow==10.1.0',
                      'PyYAML==6.0.1',
                      'rich==13.7.0',
                      'safetensors==0.4.1',
                      'scipy==1.10.1',
                      'texttable==1.7.0',
                      'torch==2.1.0',
                      'torchmetrics',
                      'tqdm==4.66.1',
                      'typer==0.9.0'],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['fdin=fdin.cli:main']},
)
