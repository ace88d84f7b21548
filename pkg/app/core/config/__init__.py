from app.core.config.config import Config, ConfigError, EffectiveParams, resolve_scaled_params

__all__ = ["Config", "ConfigError", "EffectiveParams", "resolve_scaled_params"]
