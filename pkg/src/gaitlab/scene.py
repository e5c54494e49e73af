"""Scene description: hand + object + contact model + integration timing.

A SceneConfig is plain data. It knows how to validate itself from JSON, how
to produce the packed parameter vector the kernels consume, and how to hash
itself so run manifests can pin the exact physics a result came from.
"""

import hashlib
import json
from dataclasses import dataclass, asdict, field

import numpy as np

from .geometry import ObjectShape, SHAPE_NAMES
from .hand import HandModel
from . import kernels

SCENE_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"const": "scene"},
        "shape": {"enum": list(SHAPE_NAMES)},
        "object_size": {"type": "number", "exclusiveMinimum": 0},
        "object_mass": {"type": "number", "exclusiveMinimum": 0},
        "friction": {"type": "number", "minimum": 0},
        "contact_stiffness": {"type": "number", "exclusiveMinimum": 0},
        "contact_damping": {"type": "number", "minimum": 0},
        "rolling_resistance": {"type": "number", "minimum": 0},
        "substep_dt": {"type": "number", "exclusiveMinimum": 0},
        "n_substeps": {"type": "integer", "minimum": 1},
        "action_limit": {"type": "number", "exclusiveMinimum": 0},
        "action_smoothing": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "gravity": {"type": "number"},
        "object_home": {
            "type": "array", "items": {"type": "number"},
            "minItems": 3, "maxItems": 3,
        },
    },
    "required": ["shape"],
    "additionalProperties": False,
}


@dataclass
class SceneConfig:
    """Everything the simulator needs besides live state."""

    shape: str = "sphere"
    object_size: float = 0.06      # characteristic size: circumscribed diameter
    object_mass: float = 0.03
    friction: float = 1.2
    contact_stiffness: float = 2000.0
    contact_damping: float = 10.0
    rolling_resistance: float = 0.002   # effective contact patch radius, m
    substep_dt: float = 0.002
    n_substeps: int = 25
    # per-step set-point change at full command, i.e. 1 rad/s joint speed
    action_limit: float = 0.05
    action_smoothing: float = 0.6  # EMA weight on the previous action
    gravity: float = -9.81
    object_home: tuple = (0.0, 0.0, -0.078)

    def __post_init__(self):
        if self.shape not in SHAPE_NAMES:
            raise ValueError(f"unknown shape {self.shape!r}")

    @property
    def control_dt(self) -> float:
        return self.substep_dt * self.n_substeps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = "scene"
        d["object_home"] = list(self.object_home)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        d.pop("kind", None)
        if "object_home" in d:
            d["object_home"] = tuple(d["object_home"])
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class Scene:
    """Materialized scene: hand model, object shape, packed kernel params."""

    def __init__(self, config: SceneConfig, hand: HandModel | None = None):
        self.config = config
        self.hand = hand if hand is not None else HandModel()
        self.shape = ObjectShape(config.shape, circumradius=config.object_size / 2.0,
                                 mass=config.object_mass)
        self.par = self._pack()
        # mesh arrays for the kernels; analytic shapes pass empty placeholders
        if self.shape.verts.size:
            self.verts = np.ascontiguousarray(self.shape.verts)
            self.tris = np.ascontiguousarray(self.shape.tris)
            self.planes = np.ascontiguousarray(self.shape.planes)
        else:
            self.verts = np.zeros((0, 3))
            self.tris = np.zeros((0, 3), dtype=np.int64)
            self.planes = np.zeros((0, 4))

    def _pack(self) -> np.ndarray:
        h = self.hand
        c = self.config
        par = np.zeros(kernels.P_LEN)
        par[kernels.P_L1], par[kernels.P_L2], par[kernels.P_L3] = h.lengths
        par[kernels.P_RTIP] = h.fingertip_radius
        par[kernels.P_RLINK] = h.link_radius
        par[kernels.P_KP] = h.kp
        par[kernels.P_KD] = h.kd
        par[kernels.P_IEFF] = h.joint_inertia
        par[kernels.P_TMAX] = h.torque_limit
        par[kernels.P_ALIM] = c.action_limit
        par[kernels.P_MASS] = self.shape.mass
        par[kernels.P_IBX:kernels.P_IBZ + 1] = self.shape.inertia_body
        par[kernels.P_GZ] = c.gravity
        par[kernels.P_KN] = c.contact_stiffness
        par[kernels.P_CN] = c.contact_damping
        par[kernels.P_MU] = c.friction
        par[kernels.P_PALMR] = h.palm_radius
        par[kernels.P_PALMZ] = 0.0
        par[kernels.P_NFRIC] = 3
        par[kernels.P_SHAPE] = self.shape.shape_id
        par[kernels.P_SP0], par[kernels.P_SP1] = self.shape.params
        par[kernels.P_ROLLC] = c.rolling_resistance
        return par

    def initial_state(self, q=None) -> np.ndarray:
        """Flat state vector with the hand at rest and the object at home."""
        st = np.zeros(kernels.S_LEN)
        q0 = self.hand.rest_pose() if q is None else np.asarray(q, dtype=np.float64)
        st[kernels.S_Q:kernels.S_Q + 16] = q0
        st[kernels.S_QD:kernels.S_QD + 16] = q0
        st[kernels.S_OP:kernels.S_OP + 3] = self.config.object_home
        st[kernels.S_OQ] = 1.0
        return st

    # flat-sided shapes are grasped under their bottom rim/edges, where the
    # fingertips act as shelves; round shapes get a shallower cradle
    _GRASP_PITCH = {"sphere": 35.0, "icosahedron": 35.0, "dodecahedron": 35.0,
                    "cylinder": 42.0, "cube": 42.0}

    def canonical_grasp(self, pitch_deg: float | None = None,
                        squeeze: float = 0.0015):
        """Deterministic cradle grasp of the object at its home pose.

        Casts a ray from the object center toward each finger's azimuth,
        pitched below the equator, and IK-places the fingertip center just
        inside the surface along that ray. Returns the flat state vector
        (not yet settled).
        """
        h = self.hand
        if pitch_deg is None:
            pitch_deg = self._GRASP_PITCH[self.config.shape]
        beta = np.radians(pitch_deg)
        home = np.asarray(self.config.object_home)
        targets = np.empty((h.n_fingers, 3))
        for f in range(h.n_fingers):
            d = np.array([h.ax_out[f, 0] * np.cos(beta),
                          h.ax_out[f, 1] * np.cos(beta),
                          -np.sin(beta)])
            t = self.shape.support_along(d)
            targets[f] = home + d * (t + h.fingertip_radius - squeeze)
        q, err = h.solve_fingertip_ik(targets, q_init=h.rest_pose())
        if err > 0.004:
            raise ValueError(f"canonical grasp IK residual {err:.4f} m too large "
                             f"for shape {self.config.shape!r}")
        return self.initial_state(q=q)
