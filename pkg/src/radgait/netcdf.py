__all__ = ['NetCDFFile', 'FORMAT_VERSION', 'check_version']
__doc__ = """
.. _netcdf
:mod:`netcdf` -- netcdf import point
====================================

.. module:: netcdf
   :platform: Unix, Windows
   :synopsis: Provides a single import point for the binary container
              used by sample datasets and parameter checkpoints.
              Every file written through it carries a format_version
              global attribute.
"""
from netCDF4 import Dataset as NetCDFFile

FORMAT_VERSION = 1


def check_version(ncfile, path):
    version = int(getattr(ncfile, 'format_version', -1))
    if version != FORMAT_VERSION:
        raise ValueError('%s: unsupported format_version %s (expected %d)' % (path, version, FORMAT_VERSION))
    return version
