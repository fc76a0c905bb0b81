"""vegagen: generate Vega-Lite specifications from tabular data.

A character-level sequence-to-sequence model (bidirectional LSTM encoder,
attention, LSTM decoder) trained on (dataset row, specification) pairs whose
field names have been rewritten to fixed placeholders so the model learns
structure instead of vocabulary.
"""

__version__ = "0.1.0"
