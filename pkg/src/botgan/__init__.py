"""Class-conditional GAN augmentation for multi-class social bot detection."""

__version__ = "0.1.0"
