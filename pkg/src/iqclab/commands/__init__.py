from . import density_commands as density_commands
from . import divfree_commands as divfree_commands
from . import envelope_commands as envelope_commands
from . import solver_commands as solver_commands
