"""Presencia: face-recognition attendance engine.

Pipeline: Haar-cascade face detection over integral images, a small
from-scratch CNN producing 128-d L2-normalized face embeddings trained
with a contrastive absolute-distance loss, a softmax identity head with
unknown rejection, and session-based attendance records persisted in an
append-only document store with CSV export. Exposed as a library, a CLI,
and an HTTP service.
"""

__version__ = "0.1.0"
