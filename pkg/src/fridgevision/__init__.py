"""Home grocery tracking backbone: detector evaluation, augmentation,
multi-camera inventory fusion, and automated ordering."""

__version__ = "0.1.0"
