from distutils.core import setup
try:
    from setuptools import setup
except:
    pass
import os


def find_packages():
    packages = []
    walker = os.walk('src')
    prefix = os.path.join(os.path.curdir, 'src')
    for thisdir, itsdirs, itsfiles in walker:
        if '__init__.py' in itsfiles:
            packages.append(thisdir[len(prefix) - 1:].replace(os.sep, '.'))
    return packages


def find_data():
    import re
    data_pattern = re.compile(r'.*(.|_)(yaml)$')
    data = []
    prefix = os.path.join(os.path.curdir, 'src', 'radgait')
    walker = os.walk(os.path.join('src', 'radgait'))
    for thisdir, itsdirs, itsfiles in walker:
        data.extend([os.path.join(thisdir[len(prefix) - 1:], f) for f in itsfiles if data_pattern.match(f) is not None])
    return [d.lstrip(os.sep) for d in data]

packages = find_packages()
data = find_data()

setup(name='radgait',
      version='0.1',
      description='mmWave radar gait recognition: point flow, adaptive graph convolution, '
                  'learned frame sampling and a temporal transformer on a small numpy autodiff.',
      packages=packages,
      package_dir={'': 'src'},
      package_data={'radgait': data},
      scripts=['scripts/radgait'],
      requires=['numpy (>=1.17)', 'yaml', 'netCDF4', 'scipy', 'sklearn', 'joblib', 'matplotlib', 'networkx'],
      install_requires=['numpy>=1.17', 'PyYAML', 'netCDF4', 'scipy', 'scikit-learn>=1.0', 'joblib',
                        'matplotlib>=3.5', 'networkx'],
      )
