__version__ = "1.0.0"

from xbar_sidechannel.enums import Activation, Loss, Pairing, QueryMode, PixelAttackStrategy, DatasetName, Split     # noqa
from xbar_sidechannel.model import LinearLayerModel, TrainConfig        # noqa
from xbar_sidechannel.crossbar import CrossbarInstance, QueryRecord     # noqa
from xbar_sidechannel.power_sidechannel import ColumnNormProfile, extract_column_norms, sensitivity_heatmap, correlation_study      # noqa
