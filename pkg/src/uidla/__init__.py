"""Internal diffusion-limited aggregation with uniform starting points."""
