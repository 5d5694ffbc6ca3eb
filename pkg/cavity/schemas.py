# cavity/schemas.py
import math
from datetime import datetime
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from cavity import config

Region = Literal["A", "B", "C", "boundary"]


# ---------- Model parameters ----------
class ModelParams(BaseModel):
    n: int
    k: int
    p: float
    beta: float = 1.0
    htilde: float = 0.0
    # asymptotic regime: fixes c instead of deriving it from (n, k)
    c_bar: Optional[float] = None

    @model_validator(mode="after")
    def _check(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 1 <= self.k < self.n:
            raise ValueError("k must satisfy 1 <= k < n")
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        if math.isnan(self.beta) or self.beta < 0:
            raise ValueError("beta must be >= 0")
        if math.isnan(self.htilde) or self.htilde < 0:
            raise ValueError("htilde must be >= 0")
        if self.c_bar is not None and self.c_bar <= 0:
            raise ValueError("c_bar must be positive")
        return self

    @classmethod
    def from_c(cls, k: int, p: float, c_bar: float, beta: float = 1.0, htilde: float = 0.0) -> "ModelParams":
        n = round(math.exp(k * math.log(1.0 / p) / c_bar))
        return cls(n=max(n, k + 1), k=k, p=p, beta=beta, htilde=htilde, c_bar=c_bar)

    @property
    def h(self) -> float:
        return self.htilde * self.k

    @property
    def log_inv_p(self) -> float:
        return -math.log(self.p)

    @property
    def log_n(self) -> float:
        return math.log(self.n)

    @property
    def c(self) -> float:
        if self.c_bar is not None:
            return self.c_bar
        return self.k * self.log_inv_p / self.log_n

    def require_c_above_one(self) -> None:
        if self.c <= 1.0:
            raise ValueError(f"requires c > 1, got c = {self.c:.6g}")

    def with_changes(self, **changes) -> "ModelParams":
        return ModelParams(**{**self.model_dump(), **changes})


# ---------- Reports ----------
class CliqueWindow(BaseModel):
    center: float
    lower: float
    upper: float
    base: float


class PairDiagnostics(BaseModel):
    q: int
    H0: int
    H: float
    qbar: Optional[int] = None
    qbar_ratio: Optional[float] = None
    region: Optional[Region] = None
    in_typical_set: Optional[bool] = None


class PhaseReport(BaseModel):
    region: Optional[Region] = None
    htilde_c: float
    beta_c: Optional[float] = None
    bar_beta_c: Optional[float] = None
    hat_beta_c: Optional[float] = None
    energy_density: Optional[float] = None
    energy_variance_density: Optional[float] = None
    overlap_density: Optional[float] = None
    entropy_density: Optional[float] = None
    log_z_density: Optional[float] = None
    notes: List[str] = []


class AnnealedBranches(BaseModel):
    region: Region
    ordered: float
    disordered: float
    dropped: str = "o(k)"


class AnnealedObservables(BaseModel):
    mean_energy: float
    energy_variance: float
    mean_overlap: float


class XcInterval(BaseModel):
    lower: float
    upper: float
    threshold: float


class OccupationSolution(BaseModel):
    lam: float
    mu: float
    occupations: List[float]
    entropy: float
    residual_particles: float
    residual_energy: float


class LevelStat(BaseModel):
    j: int
    observed: int
    expected: float
    std: float
    within_band: bool
    in_jc: bool
    lemma_lower: float
    lemma_upper: float
    lemma_ok: bool


class LemmaMax(BaseModel):
    q: int
    g: int
    g5: int
    value: float


class SelfAveragingRow(BaseModel):
    k: int
    n: int
    replicas: int
    mean_z: float
    var_z: float
    ratio: float
    reference: float


# ---------- Experiments ----------
ExperimentName = Literal[
    "gen", "run", "exact", "annealed", "phase-diagram",
    "second-moment", "selfavg", "fermi", "cliquenum",
]


class BudgetCaps(BaseModel):
    enumeration: int = Field(default_factory=config.enumeration_cap)
    kernel: int = Field(default_factory=config.kernel_cap)
    quadruples: int = Field(default_factory=config.quadruple_cap)
    bnb_nodes: int = Field(default_factory=config.bnb_node_cap)


class GridSpec(BaseModel):
    beta_min: float = 0.1
    beta_max: float = 5.0
    beta_points: int = 50
    k_list: List[int] = [2, 3, 4]
    htilde_list: List[float] = []


class ExperimentConfig(BaseModel):
    experiment: ExperimentName
    seed: int = Field(ge=0)
    out_dir: str = "out"
    model: Optional[ModelParams] = None
    replicas: int = Field(default=1, ge=1)
    steps: int = Field(default=100, ge=1)
    mode: Optional[str] = None
    window: int = Field(default=20, ge=1)
    delta: float = 0.05
    graph_path: Optional[str] = None
    graph_n: Optional[int] = None
    graph_p: Optional[float] = None
    c_bar: Optional[float] = None
    p: Optional[float] = None
    spectrum_path: Optional[str] = None
    particles: Optional[float] = None
    energy: Optional[float] = None
    grid: GridSpec = GridSpec()
    budget: BudgetCaps = Field(default_factory=BudgetCaps)


# ---------- HTTP payloads ----------
class GraphRequest(BaseModel):
    n: int
    p: float
    seed: int = Field(ge=0)
    with_clique: bool = False


class GraphOut(BaseModel):
    n: int
    p: float
    seed: int
    missing_fraction: float
    clique_size: Optional[int] = None
    witness: Optional[List[int]] = None


class CliqueStatsRequest(BaseModel):
    n: int
    p: float
    r: int


class CliqueStatsOut(BaseModel):
    log_expected_count: float
    window: Optional[CliqueWindow] = None


class AnnealedRequest(BaseModel):
    params: ModelParams
    mode: Literal["exact-sum", "asymptotic", "missing-links"] = "exact-sum"


class AnnealedOut(BaseModel):
    mode: str
    log_z: float
    argmax_overlap: Optional[int] = None


class FermiRequest(BaseModel):
    degeneracies: List[float]
    offset: float = 0.0
    particles: float
    energy: float
    tol: float = 1e-10


class RunOut(BaseModel):
    id: int
    experiment: str
    manifest_hash: str
    seed: int
    status: str
    exit_code: int
    out_dir: str
    message: Optional[str] = None
    created_at: Optional[datetime] = None

    model_config = {"from_attributes": True}
