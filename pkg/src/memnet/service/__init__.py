from .app import check_handler, create_app, run_handler, steady_handler

__all__ = ["create_app", "check_handler", "run_handler", "steady_handler"]
