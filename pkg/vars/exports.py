from .imports import *
from .env import *
from .rules import *
from .logs_state import *
from .run_state import *
from .custom_types import *
from .config import *
from .catalog import *
