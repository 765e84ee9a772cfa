"""Wide-angle/telephoto dual-camera dataset construction toolkit."""

__version__ = "0.1.0"
