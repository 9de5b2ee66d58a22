from setuptools import setup, find_packages


def parse_requirements(filename):
    """ load requirements from a pip requirements file """
    lineiter = (line.strip() for line in open(filename))
    return [line for line in lineiter if line and not line.startswith("#")]


reqs = parse_requirements('requirements.txt')


with open('README.md') as f:
    long_description = f.read()


setup(name='gridflow',
      version='0.1.0',
      description='AC power flow datasets and graph neural network surrogates',
      long_description=long_description,
      long_description_content_type='text/markdown',
      classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering',
      ],
      keywords='power-flow newton-raphson power-systems graph-neural-networks gcn gat graphsage tensorflow',
      license='MIT',
      packages=find_packages(exclude=['test', 'test.*']),
      package_data={'gridflow': ['cases/*.case']},
      install_requires=reqs,
      python_requires='>=3.8',
      entry_points={'console_scripts': ['gridflow = gridflow.cli:main']},
      zip_safe=False)
