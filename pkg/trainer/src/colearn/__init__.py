"""Co-learned concept embeddings over a medical knowledge graph.

Consumes the upstream pipeline's exported artifacts (nodes.jsonl/edges.jsonl/
kg_meta.json, cohort JSONL, vocabulary CSV) and trains a text encoder with
low-rank adapters plus a relation-aware graph network, feeding the resulting
embedding matrix into a sequential backbone for next-visit diagnosis
prediction.
"""

__version__ = "0.1.0"
