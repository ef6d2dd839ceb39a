"""Two-layer tamper screening for image classifiers.

Pipeline: synthesize a corpus, perturb a slice of it with a projected
gradient descent attack against a small victim classifier, extract detector
features (windowed structural similarity against white, grayscale
histograms, pooled embeddings), fit the detector zoo, and evaluate with a
stratified cross-validation harness plus a clustering pass.
"""

__version__ = "0.1.0"
