"""Service layer: pydantic schemas plus the FastAPI application."""


def create_app():
    # imported lazily so that schema-only imports stay cheap and the
    # config module can depend on schemas without a cycle
    from .app import create_app as _create_app

    return _create_app()


__all__ = ["create_app"]
