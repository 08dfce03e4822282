"""tropkraus: certified joint-spectral-radius bounds and switched
linear-quadratic value functions via minimal upper bounds in the Loewner
order.

The package is organized around one iteration engine per problem:

* `kraus.km_iterate` runs the damped, trace-normalized eigeniteration of
  the edge-indexed congruence map and extracts a sound spectral-radius
  certificate from whatever state it reaches.
* `riccati.hjb_fixed_point` iterates the Riccati time-step map to a
  piecewise quadratic value approximation.

`loewner` implements the minimal-upper-bound selections both engines fold
with, `automaton` the De Bruijn transition structures, `matkernel` the
dense symmetric kernels, and `oracles` independent reference computations
used by the test suite.  `cli` exposes everything as the `tropkraus`
command.
"""

__version__ = "0.1.0"

from .automaton import Automaton, MatrixFamily, de_bruijn, edges, family_hash, irreducible, lift
from .errors import (
    DivergenceError,
    DomainError,
    InstanceError,
    NumericFailure,
    ResourceLimitError,
    RiccatiEscapeError,
    TropkrausError,
    UsageError,
)
from .kraus import (
    Certificate,
    EigenResult,
    apply_T,
    certify,
    extremal_norm,
    km_iterate,
    km_iterate_multiplicative,
    uniform_state,
    verify_certificate,
)
from .loewner import DET, TRACE, Selection, is_upper_bound, minimality_witness, mub_fold, mub_pair
from .oracles import ProductBound, jsr_bruteforce, max_cycle_mean, riccati_rk4
from .riccati import (
    HJBResult,
    LQMode,
    LQProblem,
    ValueApprox,
    apply_M_tau,
    backsub_error,
    hamiltonian_matrix,
    hjb_fixed_point,
    riccati_flow,
    subinvariance_check,
    value_and_gradient,
)

__all__ = [
    "__version__",
    "Automaton",
    "MatrixFamily",
    "de_bruijn",
    "edges",
    "lift",
    "irreducible",
    "family_hash",
    "Selection",
    "TRACE",
    "DET",
    "mub_pair",
    "mub_fold",
    "is_upper_bound",
    "minimality_witness",
    "EigenResult",
    "Certificate",
    "uniform_state",
    "apply_T",
    "km_iterate",
    "km_iterate_multiplicative",
    "certify",
    "extremal_norm",
    "verify_certificate",
    "LQMode",
    "LQProblem",
    "ValueApprox",
    "HJBResult",
    "hamiltonian_matrix",
    "riccati_flow",
    "apply_M_tau",
    "hjb_fixed_point",
    "value_and_gradient",
    "backsub_error",
    "subinvariance_check",
    "ProductBound",
    "jsr_bruteforce",
    "max_cycle_mean",
    "riccati_rk4",
    "TropkrausError",
    "UsageError",
    "DomainError",
    "InstanceError",
    "NumericFailure",
    "RiccatiEscapeError",
    "DivergenceError",
    "ResourceLimitError",
]
