from . import errors as errors
from .settings import settings as settings
