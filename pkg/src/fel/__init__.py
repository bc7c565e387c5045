"""Frame energy of immersed tori: grids, geometry, bounds, variations, conservation laws."""

__version__ = "0.1.0"
