import logging

from cli.management.base import KramersCommand
from core.constants import CommandName

logger = logging.getLogger(__name__)


class Command(KramersCommand):
    help = "check the non-explosivity conditions p1 and p2"
    command_name = CommandName.LYAPUNOV_CHECK
