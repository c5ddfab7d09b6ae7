"""Rate matrix, forcing term, and right-hand side of the brain model.

Two independent formulations are kept deliberately: ``rhs_terms`` writes the
four mass balances term by term, while ``assemble_matrix`` builds the 4x4
rate-coefficient matrix. The test suite checks that both agree for random
parameter draws.

State ordering everywhere: (Cbb, Cbm, Cccsf, Cscsf) -- brain blood, brain
mass, cranial CSF, spinal CSF, all in mg/L.
"""
from __future__ import annotations

import numpy as np

from .params import DrugParams, ModelVariant, SystemParams

COMPARTMENTS = ("Cbb", "Cbm", "Cccsf", "Cscsf")


def assemble_matrix(sys: SystemParams, drug: DrugParams,
                    variant: ModelVariant = ModelVariant.PAPER_LITERAL) -> np.ndarray:
    """4x4 rate-coefficient matrix A (1/h) such that Y' = A Y + forcing/Vbb * e1.

    The paper-literal variant keeps the uptake-transporter term CLBin as an
    influx into brain blood and the spinal->cranial return flow Qsout as an
    efflux from cranial CSF, exactly as the mass balances are written. The
    mass-consistent variant flips both couplings.
    """
    s, d = sys, drug
    literal = variant is ModelVariant.PAPER_LITERAL

    A = np.zeros((4, 4))

    clbin_blood = -d.CLBin * d.fubb if literal else d.CLBin * d.fubb
    A[0, 0] = -(s.Qbrain + s.PSB * d.lam_bb * d.fubb + clbin_blood
                + s.PSC * d.lam_bb * d.fubb + d.CLCin * d.fubb) / s.Vbb
    A[0, 1] = (s.PSB * d.lam_bm * d.fubm + d.CLBout * d.fubm) / s.Vbb
    A[0, 2] = (s.PSC * d.lam_ccsf * d.fuccsf + d.CLCout * d.fuccsf
               + s.Qcsink) / s.Vbb
    A[0, 3] = s.Qssink / s.Vbb

    A[1, 0] = (s.PSB * d.lam_bb * d.fubb + d.CLBin * d.fubb) / s.Vbm
    A[1, 1] = -(s.PSB * d.lam_bm * d.fubm + d.CLBout * d.fubm + s.QbulkBC
                + s.PSE * d.lam_bm * d.fubm + d.CLmet) / s.Vbm
    A[1, 2] = s.PSE * d.lam_ccsf * d.fuccsf / s.Vbm
    A[1, 3] = 0.0

    A[2, 0] = (s.PSC * d.lam_bb * d.fubb + d.CLCin * d.fubb) / s.Vccsf
    A[2, 1] = s.PSE * d.lam_bm * d.fubm / s.Vccsf
    A[2, 2] = -(s.PSC * d.lam_ccsf * d.fuccsf + d.CLCout * d.fuccsf
                + s.PSE * d.lam_ccsf * d.fuccsf + s.Qsin + s.Qcsink) / s.Vccsf
    A[2, 3] = (-s.Qsout if literal else s.Qsout) / s.Vccsf

    A[3, 0] = 0.0
    A[3, 1] = 0.0
    A[3, 2] = s.Qsin / s.Vscsf
    A[3, 3] = -(s.Qsout + s.Qssink) / s.Vscsf

    return A


def forcing(t, sys: SystemParams, plasma) -> float:
    """Exogenous input Qbrain * Cart(t) in mg/h (enters brain blood)."""
    from .dataio import linear_interp

    return sys.Qbrain * linear_interp(plasma, t)


def rhs_terms(Y, cart, sys: SystemParams, drug: DrugParams,
              variant: ModelVariant = ModelVariant.PAPER_LITERAL):
    """Term-by-term mass balances; generic over floats, arrays, and autodiff
    variables (used directly by the PINN residual with trainable parameters
    substituted in).

    ``Y`` is a 4-sequence of concentrations, ``cart`` the arterial plasma
    concentration (mg/L). Returns a 4-tuple of dC/dt values (mg/(L*h)).
    """
    Cbb, Cbm, Cccsf, Cscsf = Y
    s, d = sys, drug
    literal = variant is ModelVariant.PAPER_LITERAL

    clbin_bb = d.CLBin * d.fubb * Cbb
    dCbb = (s.Qbrain * (cart - Cbb)
            + s.PSB * (d.lam_bm * d.fubm * Cbm - d.lam_bb * d.fubb * Cbb)
            + (clbin_bb if literal else -clbin_bb)
            + d.CLBout * d.fubm * Cbm
            + s.PSC * (d.lam_ccsf * d.fuccsf * Cccsf - d.lam_bb * d.fubb * Cbb)
            - d.CLCin * d.fubb * Cbb
            + d.CLCout * d.fuccsf * Cccsf
            + s.Qcsink * Cccsf
            + s.Qssink * Cscsf) / s.Vbb

    dCbm = (s.PSB * (d.lam_bb * d.fubb * Cbb - d.lam_bm * d.fubm * Cbm)
            + clbin_bb
            - d.CLBout * d.fubm * Cbm
            - s.QbulkBC * Cbm
            + s.PSE * (d.lam_ccsf * d.fuccsf * Cccsf - d.lam_bm * d.fubm * Cbm)
            - d.CLmet * Cbm) / s.Vbm

    qsout_ccsf = s.Qsout * Cscsf
    dCccsf = (s.PSC * (d.lam_bb * d.fubb * Cbb - d.lam_ccsf * d.fuccsf * Cccsf)
              + d.CLCin * d.fubb * Cbb
              - d.CLCout * d.fuccsf * Cccsf
              + (-qsout_ccsf if literal else qsout_ccsf)
              + s.PSE * (d.lam_bm * d.fubm * Cbm - d.lam_ccsf * d.fuccsf * Cccsf)
              - s.Qsin * Cccsf
              - s.Qcsink * Cccsf) / s.Vccsf

    dCscsf = (s.Qsin * Cccsf - s.Qsout * Cscsf - s.Qssink * Cscsf) / s.Vscsf

    return dCbb, dCbm, dCccsf, dCscsf


def rhs(t, Y, sys: SystemParams, drug: DrugParams, plasma,
        variant: ModelVariant = ModelVariant.PAPER_LITERAL) -> np.ndarray:
    """Right-hand side dY/dt at time t with plasma forcing interpolated."""
    from .dataio import linear_interp

    cart = linear_interp(plasma, t)
    return np.array(rhs_terms(tuple(Y), cart, sys, drug, variant))
