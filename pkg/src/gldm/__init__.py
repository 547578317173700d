"""Zero-shot dynamic MRI reconstruction with global and local score priors."""

__version__ = "0.1.0"
