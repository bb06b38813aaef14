VERSION = "1.0.0"
PROJECT_NAME = "iqclab"
PROJECT_NAME_TEXT = "IqcLab"
AUTHOR = "Matthew Johnson"
AUTHOR_EMAIL = "greenchicken1902@gmail.com"
DESCRIPTION = (
    "IqcLab: Energy densities, iqc envelopes and incompressible-field experiments "
    "for geometrically linearized elasticity."
)
URL = "https://github.com/GreenMachine582/" + PROJECT_NAME
