import logging

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from steanesim.app.api.routes import VERSION, router
from steanesim.app.config import settings

logging.basicConfig(
    level=settings.LOG_LEVEL.upper(),
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)

app = FastAPI(
    title="Steane QEC Fidelity Simulator",
    description="Fault-path expansion of state and gate fidelities for Steane-code gate sequences",
    version=VERSION,
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.allowed_origins_list,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routes
app.include_router(router, prefix="/api", tags=["Fidelity Reports"])


@app.get("/")
async def root():
    return {
        "message": "Steane QEC Fidelity Simulator API",
        "docs": "/docs",
        "health": "/api/health",
    }


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("main:app", host="0.0.0.0", port=8000, reload=True)
