"""Cauchy-transform machinery for probability measures on the real line.

Measures (atoms + gridded density), Pick-function transforms, the four
convolutions (classical, free, boolean, monotone), convolution
hemigroups parametrized by generating families, chordal Loewner
evolution for piecewise-constant driving data, and capacity
functionals (angular residue, half-plane capacity, transfinite
diameter).
"""

from .capacity import (
    HalfDisk,
    MappedBy,
    Sampled,
    VerticalSlit,
    hcap_exact,
    hcap_mc,
    lln_bounds_check,
    transfinite_diameter,
)
from .convolutions import ConvKind, boolean_convolve, cumulants, free_convolve, monotone_convolve
from .hemigroups import (
    CHHandle,
    GeneratingFamily,
    KappaAtom,
    ch_measure,
    ch_transform_eval,
    family_convert,
    family_from_json,
    family_luw_distance,
    family_to_json,
    free_subordination_eval,
    moment_generator,
    subordination_kappa_check,
)
from .loewner import (
    DrivingSpec,
    LoewnerChain,
    Segment,
    chain_analysis,
    lie_residual,
    picard_extend,
    reverse_flow,
    spec_from_json,
    spec_to_json,
)
from .measures import (
    Atom,
    GridDensity,
    Measure,
    canonicalize,
    cdf,
    classical_convolve,
    dirac,
    from_atoms,
    levy_distance,
    measure_from_json,
    measure_to_json,
    moment,
    variance,
)
from .transforms import (
    NevanlinnaData,
    P2Data,
    PickFunction,
    StolzCone,
    cauchy_eval,
    contour_moments,
    default_cone,
    nevanlinna_extract,
    p2_analyze,
    pick_eval,
    pick_invert,
    stieltjes_invert,
    voiculescu_eval,
)

__version__ = "0.1.0"
