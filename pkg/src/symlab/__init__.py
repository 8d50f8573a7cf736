"""symlab: numerical quantitative-symmetry experiments for critical semilinear equations."""
from .errors import SymlabError
from .field import GridField, HalfSpace, PowerTail, RadialProfile, read_fld, write_fld
from .models import Bubble, BubbleParams, KappaField, Nonlinearity, make_kappa, sobolev_constant

__version__ = "0.1.0"

__all__ = ["SymlabError", "GridField", "HalfSpace", "PowerTail", "RadialProfile", "read_fld", "write_fld",
           "Bubble", "BubbleParams", "KappaField", "Nonlinearity", "make_kappa", "sobolev_constant"]
