"""Time-tag event layer: generation, clock synchronization and coincidences."""
