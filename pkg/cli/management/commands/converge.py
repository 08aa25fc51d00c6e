import logging

from cli.management.base import KramersCommand
from core.constants import CommandName

logger = logging.getLogger(__name__)


class Command(KramersCommand):
    help = "estimate exceedance probabilities over a mass ladder"
    command_name = CommandName.CONVERGE
