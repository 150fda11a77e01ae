"""Streaming and distributed truncated SVD for tall snapshot matrices.

The package covers three ways of getting the K leading left singular
vectors (modes) of a matrix too large or too spread out to factor directly:

* streaming: fold column batches into a fixed-size state (`streaming`)
* distributed: row-partitioned one-shot or streaming assembly across ranks
  that talk through a small message layer (`dsvd`, `comm`)
* randomized: Gaussian-sketch low-rank SVD as a drop-in kernel (`linalg`)

plus an analytical Burgers snapshot generator (`datagen`), a binary matrix
file format with CSV/SVG emitters (`io`), and a command-line front end
(`cli`).
"""

from .comm import (CommStats, RankContext, SimTransport, TcpTransport,
                   broadcast, decode_matrix, encode_matrix, gather, recv,
                   run_simulated, send, tcp_context_from_env)
from .datagen import (BurgersConfig, burgers_matrix, burgers_solution,
                      partition_bounds, row_partition,
                      synthetic_spectrum_matrix)
from .dsvd import (ApmosConfig, LocalModes, apmos, gather_modes,
                   generate_right_vectors, parallel_qr,
                   parallel_stream_incorporate, parallel_stream_initialize)
from .errors import (CapacityError, CollectiveTimeout, ConfigError,
                     ConvergenceError, DegenerateModeError,
                     MatrixFormatError, ProtocolError)
from .io import (BatchSource, read_batches, read_matrix, read_matrix_header,
                 read_submatrix, write_matrix, write_mode_svg,
                 write_modes_csv, write_singular_values_csv)
from .linalg import (QrResult, RandomSketchConfig, SvdResult,
                     aligned_mode_difference, low_rank_svd, qr_factor,
                     randomized_range, subspace_angles, svd_full)
from .streaming import (StreamConfig, StreamState, stream_all,
                        stream_incorporate, stream_initialize)

__version__ = "0.1.0"
