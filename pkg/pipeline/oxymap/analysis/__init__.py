from oxymap.analysis.comparison import (
    MethodComparison,
    compare_methods,
    crop_to_common,
)
from oxymap.analysis.timeseries import (
    FramePair,
    pair_frames,
    plot_timeseries,
    read_checkpoints,
    read_frame_manifest,
    roi_timeseries,
    snapshot_sto2,
    write_timeseries,
)
