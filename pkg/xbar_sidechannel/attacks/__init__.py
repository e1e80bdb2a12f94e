from xbar_sidechannel.attacks.pixel import AttackCurve, single_pixel_attack, multi_pixel_attack, attack_curve     # noqa
from xbar_sidechannel.attacks.recovery import recover_weights_exact, basis_probe_queries     # noqa
from xbar_sidechannel.attacks.surrogate import SurrogateConfig, TransferResult, collect_queries, surrogate_power_prediction, train_surrogate, transfer_attack_eval, power_benefit_study      # noqa
