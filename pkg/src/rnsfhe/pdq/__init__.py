from .config import PdqConfig, digit_decompose, digit_recompose
from .columns import EncryptedColumn, encode_column
from .engine import Atom, Not, PredNode, QuerySpec, PdqEngine, LocalInverseClient
from .dataset import make_dataset, oracle_result
