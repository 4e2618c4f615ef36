"""Retrieval-augmented agent control of a simulated ultrasound robot."""

from .embedding import EmbedderConfig, EmbeddingVector, embed_text
from .knowledge_base import KnowledgeBase, load_corpora
from .robot_sim import BodyRegion, ScanTask, UltrasoundRobot
from .agent_executor import AgentSession, ExecutorConfig, run_task
from .vector_index import VectorIndex, cosine_similarity, recall_at_k

__version__ = "0.1.0"

__all__ = [
    "AgentSession",
    "BodyRegion",
    "EmbedderConfig",
    "EmbeddingVector",
    "ExecutorConfig",
    "KnowledgeBase",
    "ScanTask",
    "UltrasoundRobot",
    "VectorIndex",
    "cosine_similarity",
    "embed_text",
    "load_corpora",
    "recall_at_k",
    "run_task",
    "__version__",
]
