"""normkit: medical concept normalization toolkit.

Links free-text mentions (lay and technical German consumer-health language)
to concepts in a UMLS-style knowledge base, via a fuzzy string baseline and
an embedding nearest-neighbour linker, with self-alignment training,
candidate re-ranking, evaluation metrics, and an error taxonomy.
"""

__version__ = "0.1.0"
