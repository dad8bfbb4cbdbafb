"""Robust super-hedging and martingale optimal transport on crossing-time grids."""
from .discretize import crossing_times, embed_F, hat_path, snap_gaps, u_floor
from .hedging import (SemiStaticPortfolio, alpha_hedge, check_superreplication, lift_tree_hedge,
                      portfolio_value)
from .lifting import (compute_thresholds, extract_conditionals, gaussian_quantile, simulate_lift,
                      verify_identity)
from .lp import LinearProgram, LPSolution, solve_lp
from .marginals import (GridMarginal, Marginal, lift_static, pairing_identity_check,
                        project_marginal, prokhorov_distance)
from .mot import (PathTree, TreeMeasure, build_tree, dual_lp, primal_lp, refine_experiment,
                  verify_measure)
from .paths import (ConfigError, DomainError, GridPath, PathGeneratorConfig, SampledPath,
                    generate_paths, sup_norm, validate_grid_path)
from .payoffs import (AsianAverage, LookbackMax, LookbackPutOnMax, VanillaCall, alpha_claim,
                      discrepancy_bound_check, eval_claim, floor_below, make_claim, truncate_above)

__all__ = [n for n in dir() if not n.startswith("_")]
