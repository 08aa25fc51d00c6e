from cli.management.commands.lyapunov_check import Command

__all__ = ["Command"]
