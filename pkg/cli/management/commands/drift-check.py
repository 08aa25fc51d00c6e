from cli.management.commands.drift_check import Command

__all__ = ["Command"]
