"""12-lead ECG rhythm and morphology classification with a bidirectional LSTM.

Modules: ``core`` (types and I/O), ``dsp`` (filters, SWT, resampling),
``qrs`` (R-peak detection), ``segmenter`` (four-beat children and labels),
``net`` (the classifier), ``train``, ``evaluation``, ``synth`` (synthetic
corpus), ``pipeline`` and ``config`` (glue), ``plotting`` and ``cli``.
"""

__version__ = "0.1.0"
