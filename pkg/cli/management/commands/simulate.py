import logging

from cli.management.base import KramersCommand
from core.constants import CommandName

logger = logging.getLogger(__name__)


class Command(KramersCommand):
    help = "run one coupled trajectory pair and dump it"
    command_name = CommandName.SIMULATE
