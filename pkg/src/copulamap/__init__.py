"""Genetic linkage-map construction from SNP dosage data.

The pipeline infers conditional-independence structure among markers through
a latent-Gaussian (copula) graphical model, groups markers by the support of
the selected sparse precision matrix, and orders each group in one dimension.
A built-in population simulator and accuracy metrics support end-to-end
validation on ground-truthed data.
"""

from .copula_em import (
    EmConfig,
    ExpectedMoments,
    em_fit,
    estep_approx,
    estep_gibbs,
    to_correlation,
    truncated_normal_moments,
)
from .errors import (
    ConvergenceWarning,
    CopulamapError,
    DimensionError,
    NumericalWarning,
    ParseError,
    UnsupportedDataError,
    ValidationError,
)
from .genotypes import (
    MISSING,
    CutPointSet,
    GenotypeMatrix,
    drop_monomorphic,
    estimate_cutpoints,
    load_genotypes,
    save_genotypes,
)
from .glasso import PrecisionEstimate, glasso, lambda_path, penalized_objective
from .map_builder import (
    GroupPartition,
    LinkageGroup,
    LinkageMap,
    MarkerGraph,
    assemble_map,
    bandwidth,
    build_graph,
    conditional_correlation,
    detect_linkage_groups,
    order_groups,
    order_inbred_mds,
    order_outbred_rcm,
    write_edge_list,
)
from .metrics import MapScore, grouping_accuracy, ordering_accuracy, score_map
from .model_select import (
    PathEntry,
    PathResult,
    ebic,
    gaussian_loglik,
    select_model,
    write_path_summary,
)
from .simulate import (
    GenomePlan,
    TruthMap,
    inject_errors,
    inject_missing,
    simulate_population,
)
from .skeptic import (
    RankCorrelation,
    kendall_tau_matrix,
    nearest_pd,
    skeptic_correlation,
)
from .uncertainty import (
    CertaintyMatrix,
    PipelineConfig,
    bootstrap_certainty,
    fit_adjacency,
    write_certainty_edges,
    write_certainty_matrix,
)

__version__ = "0.1.0"
