"""bitmeter: computing performance in information-theoretic units.

Number formats are encoders, operations are discrete channels, and
throughput is reported as compute-channel capacity times use rate.
"""

from .capacity import (
    CapacityResult,
    MIEstimate,
    bsc_capacity,
    channel_capacity,
    mi_upper_bound,
    mutual_information,
    mutual_information_sampled,
    noisy_word_capacity,
)
from .channel import (
    Channel,
    NoiseSpec,
    OpSpec,
    SparsitySpec,
    apply_noise,
    apply_sparsity,
    bsc,
    build_channel,
    compose,
    constant_channel,
    constant_operand,
    identity_channel,
    joint_distribution,
    operand_input,
    output_distribution,
    parallel,
    sample_histogram,
    uniform_operand,
    write_histogram_csv,
)
from .dist import DiscreteDistribution, JointDistribution, binary_entropy, entropy, marginals, product
from .errors import (
    BitmeterError,
    ChannelTooLarge,
    EnumerationTooLarge,
    NotConverged,
    UndefinedEfficiency,
    ValidationError,
)
from .formats import (
    BUILTIN_FORMATS,
    DecodedValue,
    FormatSpec,
    MultiplicityMap,
    decode,
    encode,
    encoding_efficiency,
    enumerate_format,
    get_format,
    load_format_file,
    round_to_format,
)
from .metrics import (
    MetricReport,
    PipelineSpec,
    bits_metric,
    compare,
    flops_metric,
    information_efficiency,
    parse_pipeline,
    roofline_bits,
    tpp2023_metric,
)

__version__ = "0.1.0"
