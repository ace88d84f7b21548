"""Core пакеты приложения."""
