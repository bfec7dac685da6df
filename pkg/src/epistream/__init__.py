"""Epidemic-intelligence pipeline for short-message streams.

Three stages: adaptive health-relevance filtering with terminology-drift
handling, spatio-temporal alert generation via biosurveillance statistics,
and personalized ranking of alert-linked messages. A synthetic stream
simulator provides reproducible desk-scale data.
"""

__version__ = "0.1.0"
