"""Load generation, measurement and comparison."""
