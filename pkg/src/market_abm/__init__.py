"""Agent-based continuous double-auction market simulator with regime analytics."""

__version__ = "0.1.0"

from .book import OrderBook, OrderIntent, Side, Trade, current_price
from .config import SimConfig, load_config
from .engine import RunOutput, run_ensemble, run_simulation
from .population import Agent, AgentType, Population

__all__ = [
    "Agent",
    "AgentType",
    "OrderBook",
    "OrderIntent",
    "Population",
    "RunOutput",
    "Side",
    "SimConfig",
    "Trade",
    "current_price",
    "load_config",
    "run_ensemble",
    "run_simulation",
    "__version__",
]
