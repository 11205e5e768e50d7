"""Numerical core of sylverse.

This package contains every computation behind the command-line front end. The
modules are independent of any I/O surface apart from ``persistence``, which owns
problem files and report writers.

Modules
-------
errors : SylverseError
    Exception hierarchy shared by all modules.
settings : SolverSettings
    Solver defaults and the thread cap for ordered parallel maps.
matcore : expm, spectral_norm, quad_integrate
    Dense complex linear algebra and adaptive quadrature.
problem : MatrixODEProblem, TimeDepProblem
    Validated problem instances and seeded instance generators.
persistence : ProblemFile
    JSON problem files and JSON/CSV report writers.
oracle : SolutionSample
    Reference solutions by quadrature and by RK45 integration.
histsolve : BlockLinearSystem, HistoryState
    Block-bidiagonal history systems and their condition certificates.
lchsmodel : LFunctionals
    Shifted-generator history states, normalizations and 𝓛-functionals.
overlap : ClockBlockOperator
    Entry estimation by contracting two history states.
timedep : Propagator
    Time-ordered propagators and the time-dependent entry pipeline.
krylov : SparseMatrix, KrylovBasis, OperationCounter
    Projected and restarted Krylov baselines on lattice instances.
fermion : CovarianceModel
    Dissipative free-fermion covariance dynamics.
costmodel : CostReport
    Query and gate cost formulas and the lower-bound gap check.
"""
