"""Desk-scale multimodal learning lab: alternating unimodal training with
head-gradient modification, entropy-weighted test-time fusion, baselines,
and a missing-modality evaluation harness.
"""

__version__ = "0.1.0"
