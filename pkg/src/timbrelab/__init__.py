"""Timbre-space laboratory for a subtractive synthesizer.

Renders a bank of synthesizer stimuli, extracts acoustic descriptors,
aggregates pairwise dissimilarity ratings, fits non-metric MDS, and
reports descriptor-vs-dimension correlations.
"""

__version__ = "0.1.0"
