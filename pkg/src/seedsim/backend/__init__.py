from .core import Backend, BackendConfig
from .store import RecordStore
from .server import serve, BackendHandle
