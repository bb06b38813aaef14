from . import command_schemas as command_schemas
from . import density_schemas as density_schemas
from . import envelope_schemas as envelope_schemas
from . import experiment_schemas as experiment_schemas
from . import grid_schemas as grid_schemas
