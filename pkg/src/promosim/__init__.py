"""Agent-based simulator of a retail credit-card market with interest-free promotions."""

__version__ = "0.1.0"

from .behaviour import BehaviouralParams, CustomerAgent
from .calibration import TARGETS, CalibrationSpec, MomentSet, calibrate, compute_moments, mape
from .config import ConfigError, LenderConfig, MarketConfig, load_config, save_config
from .instruments import CardOffer, CreditCard, PromotionStrategy

__all__ = [
    "BehaviouralParams", "CustomerAgent", "TARGETS", "CalibrationSpec", "MomentSet", "calibrate",
    "compute_moments", "mape", "ConfigError", "LenderConfig", "MarketConfig", "load_config",
    "save_config", "CardOffer", "CreditCard", "PromotionStrategy", "__version__",
]
