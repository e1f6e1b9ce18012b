from setuptools import find_packages, setup

setup(
    name='gs-sketch-diffusion',
    version='0.1.0',
    description='Gaussian-Softmax joint continuous-discrete diffusion for parametric CAD sketches',
    long_description=open("README.md", encoding="utf-8").read(),
    long_description_content_type="text/markdown",
    license='MIT',
    packages=find_packages(include=['simplex*', 'schedules*', 'diffusion*', 'sketches*', 'denoiser*']),
    py_modules=['process_base', 'factory', 'sketchdnn_cli'],
    package_data={'sketches': ['testdata/*.svg']},
    install_requires=['numpy>=1.24', 'scipy>=1.10', 'torch>=2.0', 'tqdm>=4.65'],
    entry_points={'console_scripts': ['sketchdnn=sketchdnn_cli:main']},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3.11",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
)
