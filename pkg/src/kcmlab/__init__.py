"""Bootstrap percolation closures, universality classification of planar
update families, droplet renormalization events, and event-driven simulation
of kinetically constrained dynamics."""

__version__ = "0.1.0"

from .lattice import (
    Boundary,
    Configuration,
    Direction,
    DirectionMetrics,
    SeededStream,
    Window,
    compare_clockwise,
    direction_metrics,
    half_plane_contains,
)
from .family import (
    ClassificationReport,
    Difficulty,
    StabilityReport,
    UpdateFamily,
    classify,
    difficulty,
    family_difficulty,
    is_unstable,
    quasi_stable_frame,
    stable_arcs,
)
from .bootstrap import (
    ClosureResult,
    GrowthVerdict,
    HelpingGenerator,
    closure,
    find_helping_generator,
    infinite_growth,
    min_w,
)
from .droplets import (
    DirectionFrame,
    Droplet,
    ScaleSchedule,
    Segment,
    Tube,
    desk_schedule,
    extension_vector,
)
from .events import (
    EventOutcome,
    Step,
    TowerSpec,
    box_events,
    build_tower,
    estimate_probability,
    has_helping,
    has_w_helping,
    is_traversable,
    sample_sg,
    sg_check,
    w_run_probability,
)
from .kcm import (
    ExactSystem,
    SimConfig,
    TauSample,
    constraint,
    east_min_infections,
    east_reach_bfs,
    estimate_tau0,
    exact_tau0,
    simulate,
    stationarity_probe,
)
