"""Library modules for the direction-finding evaluation CLI."""

from . import geometry  # noqa: F401
from . import farfield  # noqa: F401
from . import synth  # noqa: F401
from . import uncertainty  # noqa: F401
from . import incident  # noqa: F401
from . import estimators  # noqa: F401
from . import modeselect  # noqa: F401
