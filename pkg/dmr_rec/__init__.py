"""Dynamic multi-trend micro-video recommender."""
