"""phi-FEM for -Δu + u = f with Neumann or Robin conditions on level-set domains."""
from .assembly import (
    BlockSystem,
    DofLayout,
    Neumann,
    NeumannHomogeneous,
    PhiFemParams,
    ProblemData,
    Robin,
    assemble,
    assemble_term,
    build_dof_layout,
)
from .levelset import (
    DomainDecomposition,
    LevelSetSpec,
    check_patch_condition,
    classify_cells,
    interpolate_levelset,
)
from .linalg import condition_number_2, solve
from .mesh import BoundingBox, Mesh, build_background_mesh
from .postproc import ErrorReport, compute_errors, fit_rate
from .problems import get_case
from .study import StudyConfig, StudyReport

__version__ = "0.1.0"
