"""Simulator, trainer, and analysis toolkit for programmable microwave
diffractive networks: cascaded coupler meshes with tunable phase layers,
trained in silico for classification and beam steering."""

from .analysis import (
    EnergyBudget,
    TimingBudget,
    ablation_suite,
    cycle_time,
    expand_network,
    operations_per_pass,
    throughput_energy,
)
from .beam import (
    ArrayGeometry,
    FarFieldGrid,
    PhaseCodebook,
    beam_excitation,
    beam_loss,
    far_field_pattern,
    pattern_correlation_matrix,
    train_beam_codebook,
)
from .device import (
    DEFAULT_SHIFTER,
    CouplerMeshSpec,
    PhaseShifterParams,
    build_board,
    build_stack,
    export_codebook,
    max_phase_range,
    phase_to_capacitance,
    reflection_coefficient,
    reflection_phase,
    synth_coupler_mesh,
)
from .estimators import (
    BeamCodebookPlanner,
    DetectorHeadClassifier,
    PhasedNetworkClassifier,
    SpectralCompressor,
)
from .netcore import (
    DiffractionLayer,
    LinearHead,
    Network,
    PhaseLayer,
    cascade_boards,
    class_ports,
    classify,
    detect,
    forward_batch,
    forward_single,
    load_network,
    save_network,
)
from .train import (
    Checkpoint,
    Scaler,
    TrainConfig,
    TrainResult,
    backward,
    fine_train,
    load_checkpoint,
    pretrain,
    save_checkpoint,
    sgdm_step,
)
from .validation import NumericalError, PhaseRangeError, ValidationError

__version__ = "0.1.0"
