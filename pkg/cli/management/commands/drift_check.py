import logging

from cli.management.base import KramersCommand
from core.constants import CommandName

logger = logging.getLogger(__name__)


class Command(KramersCommand):
    help = "compare the noise-induced drift with the analytic gradient of D"
    command_name = CommandName.DRIFT_CHECK
