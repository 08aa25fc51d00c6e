from cli.management.commands.exit_times import Command

__all__ = ["Command"]
