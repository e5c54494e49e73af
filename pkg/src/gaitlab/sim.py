"""Simulation front end: typed state views, stepping, snapshots.

State is a single float64 vector (see kernels layout), so save/restore is an
array copy and serialized snapshots round-trip bit-exactly through JSON by
storing every float with full repr precision.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .scene import Scene, SceneConfig

SNAPSHOT_VERSION = 1


class SimulationDiverged(RuntimeError):
    """Raised when the integrator blows up (non-finite or runaway state)."""


@dataclass
class ContactReport:
    """One fingertip-object contact from the most recent query."""

    finger: int
    position: np.ndarray      # world contact point, (3,)
    normal_force: float       # >= 0
    normal: np.ndarray        # unit vector, fingertip center -> contact point
    fingertip_only: bool      # no palm or non-tip link touched the object


@dataclass
class StepDiagnostics:
    n_tip_contacts: int
    n_link_contacts: int
    palm_contact: bool
    nonfingertip_contact: bool
    tip_force_sum: float
    max_penetration: float
    net_contact_force: np.ndarray


class Simulation:
    """Deterministic hand+object simulation driven by set-point commands."""

    def __init__(self, config: SceneConfig | None = None):
        self.scene = Scene(config if config is not None else SceneConfig())
        self.state = self.scene.initial_state()
        self._rep = np.zeros((kernels.N_FINGERS, 8))
        self._misc = np.zeros(kernels.M_LEN)

    # ---- typed views -------------------------------------------------
    @property
    def q(self) -> np.ndarray:
        return self.state[kernels.S_Q:kernels.S_Q + 16]

    @property
    def dq(self) -> np.ndarray:
        return self.state[kernels.S_DQ:kernels.S_DQ + 16]

    @property
    def q_des(self) -> np.ndarray:
        return self.state[kernels.S_QD:kernels.S_QD + 16]

    @property
    def obj_pos(self) -> np.ndarray:
        return self.state[kernels.S_OP:kernels.S_OP + 3]

    @property
    def obj_quat(self) -> np.ndarray:
        return self.state[kernels.S_OQ:kernels.S_OQ + 4]

    @property
    def obj_linvel(self) -> np.ndarray:
        return self.state[kernels.S_OV:kernels.S_OV + 3]

    @property
    def obj_angvel(self) -> np.ndarray:
        return self.state[kernels.S_OW:kernels.S_OW + 3]

    def fingertips(self) -> np.ndarray:
        return self.scene.hand.fingertips(self.q)

    # ---- stepping ----------------------------------------------------
    def step(self, dq_des: np.ndarray):
        """Run one control period: apply set-point deltas, integrate physics.

        Returns (contacts, diagnostics); contacts describe the post-step
        state. Raises SimulationDiverged on integrator blowup.
        """
        sc = self.scene
        kernels.control_step(
            self.state, np.asarray(dq_des, dtype=np.float64),
            sc.config.n_substeps, sc.config.substep_dt,
            sc.hand.q_lo, sc.hand.q_hi,
            sc.hand.base_pos, sc.hand.ax_out, sc.hand.ax_tan, sc.par,
            sc.verts, sc.tris, sc.planes, self._rep, self._misc)
        if self._misc[kernels.M_DIVERGED] != 0.0:
            raise SimulationDiverged("simulation state diverged")
        return self._collect_reports(), self._diagnostics()

    def query_contacts(self):
        """Contact reports for the current state without advancing time."""
        sc = self.scene
        kernels.control_step(
            self.state, np.zeros(16), 0, sc.config.substep_dt,
            sc.hand.q_lo, sc.hand.q_hi,
            sc.hand.base_pos, sc.hand.ax_out, sc.hand.ax_tan, sc.par,
            sc.verts, sc.tris, sc.planes, self._rep, self._misc)
        return self._collect_reports(), self._diagnostics()

    def settle(self, duration: float):
        """Hold current set-points for `duration` seconds."""
        n = max(1, int(round(duration / self.scene.config.control_dt)))
        zero = np.zeros(16)
        out = None
        for _ in range(n):
            out = self.step(zero)
        return out

    def apply_external_force(self, force, duration: float):
        """Constant world-frame force at the object center of mass."""
        self.state[kernels.S_EF:kernels.S_EF + 3] = np.asarray(force, dtype=np.float64)
        self.state[kernels.S_ET] = float(duration)

    def _collect_reports(self):
        fingertip_only = self._misc[kernels.M_NONFINGERTIP] == 0.0
        reports = []
        for f in range(kernels.N_FINGERS):
            if self._rep[f, 0] != 0.0:
                reports.append(ContactReport(
                    finger=f,
                    position=self._rep[f, 1:4].copy(),
                    normal_force=float(self._rep[f, 4]),
                    normal=self._rep[f, 5:8].copy(),
                    fingertip_only=fingertip_only))
        return reports

    def _diagnostics(self) -> StepDiagnostics:
        m = self._misc
        return StepDiagnostics(
            n_tip_contacts=int(m[kernels.M_NTIP]),
            n_link_contacts=int(m[kernels.M_NLINK]),
            palm_contact=m[kernels.M_PALM] != 0.0,
            nonfingertip_contact=m[kernels.M_NONFINGERTIP] != 0.0,
            tip_force_sum=float(m[kernels.M_FNSUM]),
            max_penetration=float(m[kernels.M_MAXDEPTH]),
            net_contact_force=m[kernels.M_FSUM:kernels.M_FSUM + 3].copy())

    # ---- snapshots ---------------------------------------------------
    def save_snapshot(self) -> np.ndarray:
        return self.state.copy()

    def restore_snapshot(self, snap: np.ndarray):
        snap = np.asarray(snap, dtype=np.float64)
        if snap.shape != (kernels.S_LEN,):
            raise ValueError(f"snapshot must have shape ({kernels.S_LEN},)")
        self.state[:] = snap

    def snapshot_to_json(self, snap: np.ndarray | None = None) -> str:
        snap = self.state if snap is None else snap
        return json.dumps({
            "version": SNAPSHOT_VERSION,
            "scene_hash": self.scene.config.config_hash(),
            "state": [repr(float(x)) for x in snap],
        })

    @staticmethod
    def snapshot_from_json(blob: str) -> np.ndarray:
        d = json.loads(blob)
        if d.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {d.get('version')!r}")
        return np.array([float(x) for x in d["state"]])
