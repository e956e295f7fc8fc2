"""Semi-device-independent randomness: entropy bounds, rates and tooling."""

__version__ = "0.1.0"
