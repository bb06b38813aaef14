from . import cell_models as cell_models
from . import density_models as density_models
from . import experiment_models as experiment_models
from . import grid_models as grid_models
