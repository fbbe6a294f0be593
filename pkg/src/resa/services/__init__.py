"""Reservation runtime: handlers, stores, bus, HTTP servers and deployments."""

from .config import DeploymentSpec, ServiceConfig, ServiceSpec, WorkModel
from .deploy import Deployment, DeploymentError, run_deployment

__all__ = ["DeploymentSpec", "ServiceConfig", "ServiceSpec", "WorkModel", "Deployment", "DeploymentError",
           "run_deployment"]
