from .checkpoint import Checkpoint, config_hash
from .previews import read_loss_log, read_pgm, write_loss_log, write_pgm
from .prot import decode_prot, encode_prot, read_prot, write_prot

__all__ = ["Checkpoint", "config_hash", "decode_prot", "encode_prot", "read_loss_log", "read_pgm", "read_prot",
           "write_loss_log", "write_pgm", "write_prot"]
