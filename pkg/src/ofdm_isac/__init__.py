"""Monostatic OFDM integrated sensing and communication toolkit.

Simulates beam-swept MIMO-OFDM receptions over parameterized scenes, runs
reciprocal-filtering / matched-filtering / LMMSE sensing pipelines with
CFAR detection, ESPRIT angle estimation and DBSCAN clustering, evaluates
communication mutual information, and reproduces detection-vs-rate
trade-off experiments at desk scale.
"""

from .channel import (
    CommReception,
    RadarCube,
    radar_link_gain,
    steering,
    synthesize_comm_reception,
    synthesize_radar_cube,
)
from .cubefile import CubeFormatError, CubeMeta, export_cube, ingest_cube
from .detector import (
    CfarConfig,
    ClusterConfig,
    DelayDopplerMap,
    Detection,
    beam_pipeline,
    cfar_detect,
    dbscan_cluster,
    delay_doppler_map_per_antenna,
    esprit_angles,
    full_sensing,
    ls_gains,
    noncoherent_integrate,
    run_all_estimators,
    spatial_snapshot,
)
from .estimators import (
    ChannelEstimate,
    estimate_snr_b,
    lmmse_estimate,
    mf_estimate,
    rf_estimate,
)
from .harness import (
    Campaign,
    run_campaign,
    run_trial,
    score_detections,
)
from .rate import MiResult, frame_rate, mi_cell, noise_entropy, \
    output_density
from .scenario import (
    CommPath,
    ConfigurationError,
    Concurrent,
    Constellation,
    OfdmConfig,
    Scenario,
    Target,
    TimeSharing,
    load_scenario,
    make_constellation,
    validate_scenario,
)
from .txchain import (
    BeamPlan,
    Frame,
    TxBeamMatrix,
    build_beam_matrix,
    generate_frame,
    make_beam_plan,
    sensing_beam_angles,
)

__version__ = "0.1.0"
