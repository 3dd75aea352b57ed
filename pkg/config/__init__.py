from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("mini-cavityfield")
except PackageNotFoundError:
    __version__ = "0.1.0"
